"""Loss terms for both training phases. Embedding arguments are (B, d) tensors from the identity encoder."""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations

import numpy as np

from . import numerics as nx
from .numerics import Tensor

IMAGE_KINDS = ("recovered", "anonymized", "false_recovered")


def theta(e1, e2) -> Tensor:
    return nx.cosine_rows(e1, e2)


def theta_plus(e1, e2) -> Tensor:
    """max(0, cosine) per row."""
    return nx.relu(theta(e1, e2))


def theta_minus(e1, e2) -> Tensor:
    """1 - cosine per row, in [0, 2]."""
    return 1.0 - theta(e1, e2)


def l1(a, b, axis=-1) -> Tensor:
    return nx.tmean(nx.absolute(nx.sub(a, b)), axis=axis)


def l1_norm(a, b, axis=-1) -> Tensor:
    """Summed absolute difference (the literal 1-norm)."""
    return nx.tsum(nx.absolute(nx.sub(a, b)), axis=axis)


def loss_vq(x_rec, x, alpha: float = 0.84, beta: float = 0.16) -> Tensor:
    """alpha * (1 - SSIM) + beta * pixel 1-norm, batch mean."""
    x_rec, x = nx.tensor(x_rec), nx.tensor(x)
    per = alpha * (1.0 - nx.ssim_batch(x_rec, x)) + beta * l1_norm(x_rec, x, axis=(-2, -1))
    return nx.tmean(per)


def loss_sem(model, x_rec, x, z_x=None) -> Tensor:
    """Identity-embedding L1 plus pose-proxy L1, batch mean."""
    z_x = model.e_id(x) if z_x is None else z_x
    per = l1(model.e_id(x_rec), z_x) + l1(model.pose(x_rec), model.pose(x))
    return nx.tmean(per)


def loss_p1(model, x, lam: float = 0.01, alpha: float = 0.84, beta: float = 0.16) -> tuple[Tensor, dict]:
    x = nx.tensor(x)
    z = model.e_id(x)
    x_rec = model.generator_g(model.mapping_m(z, model.e_attr(x)))
    vq = loss_vq(x_rec, x, alpha, beta)
    sem = loss_sem(model, x_rec, x, z)
    total = lam * vq + sem
    return total, {"vq": vq.item(), "sem": sem.item(), "p1": total.item()}


def loss_anon(e_anon, e_orig) -> Tensor:
    return nx.tmean(theta_plus(e_anon, e_orig))


def diversity_pairs(n_samples: int, n_keys: int) -> tuple[list[tuple[int, int]], list[tuple[int, int]]]:
    """Flat-index pairs for rows laid out as [sample, key]: same key across samples, same sample across keys."""
    def idx(s, k):
        return s * n_keys + k

    inter_id = [(idx(i, k), idx(j, k)) for k in range(n_keys) for i, j in combinations(range(n_samples), 2)]
    inter_key = [(idx(s, a), idx(s, b)) for s in range(n_samples) for a, b in combinations(range(n_keys), 2)]
    return inter_id, inter_key


def loss_div(e_anon, n_samples: int, n_keys: int) -> Tensor:
    """Mean theta+ over same-key/different-identity pairs plus the same over same-identity/different-key pairs."""
    e_anon = nx.tensor(e_anon)
    inter_id, inter_key = diversity_pairs(n_samples, n_keys)
    total = None
    for pairs in (inter_id, inter_key):
        if not pairs:
            raise nx.ContractError("diversity loss needs >= 2 samples and >= 2 keys")
        a = np.array([p[0] for p in pairs])
        b = np.array([p[1] for p in pairs])
        term = nx.tmean(theta_plus(e_anon[a], e_anon[b]))
        total = term if total is None else total + term
    return total


def loss_deanon(e_rec, e_false, e_orig) -> Tensor:
    return nx.tmean(theta_minus(e_rec, e_orig) + theta_plus(e_false, e_orig))


def percep_distance(model, xa, xb) -> Tensor:
    """Root-mean-square gap between frozen random perceptual features."""
    fa, fb = model.percep(xa), model.percep(xb)
    return nx.l2norm(fa - fb) * (1.0 / np.sqrt(fa.shape[-1]))


def img_weights(kind: str, cfg_loss) -> tuple[float, float, float, float]:
    if kind not in IMAGE_KINDS:
        raise nx.ContractError(f"unknown image kind {kind!r}")
    return tuple(cfg_loss.img_recovered if kind == "recovered" else cfg_loss.img_other)


def loss_img(model, x_gen, x, kind: str, cfg_loss=None, weights=None) -> Tensor:
    """Pixel L1, perceptual proxy, pose-proxy L1 and parse-proxy L2 with kind-dependent weights."""
    if weights is None:
        weights = img_weights(kind, cfg_loss if cfg_loss is not None else model.cfg.loss)
    l1w, pw, posew, parsew = weights
    x_gen, x = nx.tensor(x_gen), nx.tensor(x)
    per = (l1w * l1(x_gen, x, axis=(-2, -1))
           + pw * percep_distance(model, x_gen, x)
           + posew * l1(model.pose(x_gen), model.pose(x))
           + parsew * nx.l2norm(model.parse(x_gen) - model.parse(x)))
    return nx.tmean(per)


@dataclass
class Phase2Batch:
    """Everything one phase-II forward pass produces, rows laid out as [sample, key]."""
    x: Tensor
    x_anon: Tensor
    x_rec: Tensor
    x_false: Tensor
    e_orig: Tensor
    e_anon: Tensor
    e_rec: Tensor
    e_false: Tensor
    n_samples: int
    n_keys: int


def phase2_forward(model, x, keys, wrong_keys, use_icl: bool = True) -> Phase2Batch:
    """Anonymize every sample under every key, then recover with the matching and the wrong keys."""
    x = np.asarray(x) if not isinstance(x, Tensor) else x
    x = nx.tensor(x)
    keys, wrong_keys = np.asarray(keys), np.asarray(wrong_keys)
    b, nk = x.shape[0], keys.shape[0]
    rows = np.repeat(np.arange(b), nk)
    k_rep = np.tile(keys, (b, 1))
    kw_rep = np.tile(wrong_keys, (b, 1))
    x_rep = x[rows]
    z = model.e_id(x)
    a = model.e_attr(x)
    z_rep, a_rep = z[rows], a[rows]
    x_anon = model.generator_g(model.mapping_m(model.sif.forward(z_rep, k_rep), a_rep))
    e_anon = model.e_id(x_anon)
    a_anon = model.e_attr(x_anon)
    zc = model.icl(e_anon) if use_icl else e_anon
    n = b * nk
    both = model.sif.inverse(nx.concat([zc, zc], axis=0), np.concatenate([k_rep, kw_rep], axis=0))
    out = model.generator_g(model.mapping_m(both, nx.concat([a_anon, a_anon], axis=0)))
    e_out = model.e_id(out)
    return Phase2Batch(x_rep, x_anon, out[:n], out[n:], z_rep, e_anon, e_out[:n], e_out[n:], b, nk)


def loss_p2(model, batch: Phase2Batch, ablation=None, cfg_loss=None) -> tuple[Tensor, dict]:
    ablation = ablation if ablation is not None else model.cfg.ablation
    cl = cfg_loss if cfg_loss is not None else model.cfg.loss
    terms: dict[str, Tensor] = {}
    terms["anon"] = loss_anon(batch.e_anon, batch.e_orig) * cl.w_anon
    if not ablation.no_div:
        terms["div"] = loss_div(batch.e_anon, batch.n_samples, batch.n_keys) * cl.w_div
    terms["deanon"] = loss_deanon(batch.e_rec, batch.e_false, batch.e_orig) * cl.w_deanon
    if not ablation.no_img:
        terms["img"] = (loss_img(model, batch.x_rec, batch.x, "recovered", cl)
                        + loss_img(model, batch.x_anon, batch.x, "anonymized", cl)
                        + loss_img(model, batch.x_false, batch.x, "false_recovered", cl)) * cl.w_img
    total = None
    for t in terms.values():
        total = t if total is None else total + t
    info = {k: v.item() for k, v in terms.items()}
    info["p2"] = total.item()
    return total, info
