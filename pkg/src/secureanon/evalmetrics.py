"""Evaluation: de-identification, recovery quality, diversity, key sensitivity, ablations.

Every report keeps its per-sample rows; the summary is always recomputed from them.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from itertools import combinations
from pathlib import Path
from typing import Sequence

import numpy as np

from . import numerics as nx
from . import svg
from .keygen import flip_bit
from .pipeline import PipelineModel
from .synthdata import SyntheticDataset

KFFA_LABEL = "KFFA-proxy"


@dataclass
class Report:
    kind: str
    rows: list[dict]
    meta: dict = field(default_factory=dict)

    @property
    def summary(self) -> dict:
        return summarize(self.rows)

    def column(self, name: str) -> np.ndarray:
        return np.array([r[name] for r in self.rows], dtype=np.float64)

    def to_json(self) -> str:
        doc = {"kind": self.kind, "meta": self.meta, "n": len(self.rows), "summary": self.summary}
        return json.dumps(doc, indent=2, sort_keys=True)

    def to_csv(self) -> str:
        buf = io.StringIO()
        if self.rows:
            w = csv.DictWriter(buf, fieldnames=list(self.rows[0]), lineterminator="\n")
            w.writeheader()
            for r in self.rows:
                w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in r.items()})
        return buf.getvalue()

    def write(self, directory: str | Path, chart: str | None = None) -> None:
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        (d / f"{self.kind}.json").write_text(self.to_json() + "\n", encoding="utf-8")
        (d / f"{self.kind}.csv").write_text(self.to_csv(), encoding="utf-8")
        if chart is not None:
            svg.write(d / f"{self.kind}.svg", chart)


class DeidReport(Report):
    pass


class RecoveryReport(Report):
    pass


class DiversityReport(Report):
    pass


class SensitivityReport(Report):
    @property
    def summary(self) -> dict:
        out = summarize(self.rows)
        gaps = self.column("gap") if self.rows else np.zeros(0)
        if len(gaps):
            out.update(gap_min=float(gaps.min()), gap_median=float(np.median(gaps)), gap_max=float(gaps.max()))
        return out


def summarize(rows: Sequence[dict]) -> dict:
    """Arithmetic mean of every numeric, non-index column."""
    if not rows:
        return {}
    out = {}
    for key, v in rows[0].items():
        if key in ("sample", "identity", "bit") or not isinstance(v, (float, int)) or isinstance(v, bool):
            continue
        out[f"mean_{key}"] = float(np.mean([r[key] for r in rows]))
    return out


def read_csv_rows(text: str) -> list[dict]:
    """Inverse of ``Report.to_csv``: floats come back bit-exact."""
    rows = []
    for r in csv.DictReader(io.StringIO(text)):
        rows.append({k: (int(v) if v.lstrip("-").isdigit() else float(v)) for k, v in r.items()})
    return rows


# ---------------------------------------------------------------------- helpers
def _images(data: SyntheticDataset, part: str, model: PipelineModel) -> tuple[np.ndarray, np.ndarray]:
    idx = data.indices(part)
    return idx, data.images[idx].astype(nx.as_dtype(model.cfg.precision))


def _embed(model: PipelineModel, x) -> np.ndarray:
    return model.e_id(x).data.astype(np.float64)


def _row_cos(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.sum(a * b, axis=1) / (np.linalg.norm(a, axis=1) * np.linalg.norm(b, axis=1))


def _percep(model: PipelineModel, xa, xb) -> np.ndarray:
    fa, fb = model.percep(xa).data.astype(np.float64), model.percep(xb).data.astype(np.float64)
    return np.linalg.norm(fa - fb, axis=1) / np.sqrt(fa.shape[1])


def _anon(model: PipelineModel, x, secret, bypass: bool = False) -> np.ndarray:
    return model.anonymize_k(x, model.keygen(secret), bypass=bypass).data


def _deanon(model: PipelineModel, x_anon, secret) -> np.ndarray:
    use_icl = not model.cfg.ablation.no_icl
    return model.deanonymize_k(x_anon, model.keygen(secret), use_icl=use_icl).data


def quality_rows(model: PipelineModel, out: np.ndarray, x: np.ndarray) -> list[dict]:
    """MSE, PSNR, SSIM, perceptual-proxy distance and identity cosine of ``out`` against ``x``."""
    cos = _row_cos(_embed(model, out), _embed(model, x))
    per = _percep(model, out, x)
    rows = []
    for i in range(len(x)):
        a, b = out[i].astype(np.float64), x[i].astype(np.float64)
        rows.append({"sample": i, "mse": nx.mse(a, b), "psnr": nx.psnr(a, b), "ssim": nx.ssim(a, b),
                     "percep": float(per[i]), "id_cos": float(cos[i])})
    return rows


# ------------------------------------------------------------------- reports
def eval_deid(model: PipelineModel, data: SyntheticDataset, secret, part: str = "test",
              bypass: bool = False) -> DeidReport:
    """Identity cosine and embedding L1 between anonymized and original, next to plain reconstruction."""
    idx, x = _images(data, part, model)
    e = _embed(model, x)
    e_anon = _embed(model, _anon(model, x, secret, bypass))
    e_rec = _embed(model, model.reconstruct(x).data)
    cos = _row_cos(e_anon, e)
    l1 = np.mean(np.abs(e_anon / np.linalg.norm(e_anon, axis=1, keepdims=True) - e), axis=1)
    rec = _row_cos(e_rec, e)
    rows = [{"sample": int(s), "identity": int(data.identity_of[s]), "cos": float(c), "l1": float(d),
             "rec_cos": float(r)} for s, c, d, r in zip(idx, cos, l1, rec)]
    return DeidReport("deid", rows, {"part": part, "bypass": bypass})


def eval_recovery(model: PipelineModel, data: SyntheticDataset, secret, part: str = "test",
                  recover_with=None) -> RecoveryReport:
    """Quality of de-anonymization; ``recover_with`` substitutes another secret for the inverse."""
    idx, x = _images(data, part, model)
    x_anon = _anon(model, x, secret)
    out = _deanon(model, x_anon, secret if recover_with is None else recover_with)
    rows = quality_rows(model, out, x)
    for r, s in zip(rows, idx):
        r["sample"] = int(s)
    return RecoveryReport("recovery", rows, {"part": part, "matching_key": recover_with is None})


def eval_reconstruction(model: PipelineModel, data: SyntheticDataset, part: str = "test") -> RecoveryReport:
    """Same metrics for the plain reconstruction, the ceiling for recovery."""
    idx, x = _images(data, part, model)
    rows = quality_rows(model, model.reconstruct(x).data, x)
    for r, s in zip(rows, idx):
        r["sample"] = int(s)
    return RecoveryReport("reconstruction", rows, {"part": part})


def pairwise_angles(emb: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Cosines and angles (degrees) over all K(K-1)/2 pairs of rows."""
    pairs = list(combinations(range(len(emb)), 2))
    if not pairs:
        raise nx.ContractError("need at least two embeddings")
    cos = np.array([nx.cosine(emb[i], emb[j]) for i, j in pairs])
    return cos, np.degrees(np.arccos(np.clip(cos, -1.0, 1.0)))


def eval_diversity(model: PipelineModel, data: SyntheticDataset, secrets: Sequence, part: str = "test") -> DiversityReport:
    """Spread of one source's anonymizations under K distinct secrets."""
    if len(secrets) < 2:
        raise nx.ContractError("diversity needs K >= 2 secrets")
    idx, x = _images(data, part, model)
    e = _embed(model, x)
    embs = np.stack([_embed(model, _anon(model, x, s)) for s in secrets], axis=1)  # (n, K, d)
    rows = []
    for i, s in enumerate(idx):
        cos, ang = pairwise_angles(embs[i])
        rows.append({"sample": int(s), "pair_cos": float(cos.mean()), "angle_deg": float(ang.mean()),
                     "anon_cos": float(_row_cos(embs[i], np.repeat(e[i:i + 1], len(secrets), 0)).mean()),
                     "pairs": len(cos)})
    return DiversityReport("diversity", rows, {"part": part, "keys": len(secrets), "angle_score": KFFA_LABEL})


def key_gap_rows(model: PipelineModel, x: np.ndarray, secret, wrong_secrets: Sequence, bits: Sequence[int]) -> list[dict]:
    e = _embed(model, x)
    x_anon = _anon(model, x, secret)
    good = _row_cos(_embed(model, _deanon(model, x_anon, secret)), e)
    rows = []
    for w, bit in zip(wrong_secrets, bits):
        bad = _row_cos(_embed(model, _deanon(model, x_anon, w)), e)
        rows += [{"sample": i, "bit": int(bit), "correct_cos": float(g), "wrong_cos": float(b), "gap": float(g - b)}
                 for i, (g, b) in enumerate(zip(good, bad))]
    return rows


def eval_key_sensitivity(model: PipelineModel, data: SyntheticDataset, secret, bitflips: int = 8,
                         part: str = "test", seed: int = 0) -> SensitivityReport:
    """Correct-key minus single-bit-flipped-key recovery cosine, per sample and flipped bit."""
    idx, x = _images(data, part, model)
    raw = secret.encode("utf-8") if isinstance(secret, str) else bytes(secret)
    rng = nx.make_rng(seed)
    bits = [int(b) for b in rng.choice(8 * len(raw), size=min(bitflips, 8 * len(raw)), replace=False)]
    rows = key_gap_rows(model, x, raw, [flip_bit(raw, b) for b in bits], bits)
    for r in rows:
        r["sample"] = int(idx[r["sample"]])
    return SensitivityReport("sensitivity", rows, {"part": part, "bitflips": len(bits)})


def quality_proxy(model: PipelineModel, data: SyntheticDataset, secret, part: str = "test") -> float:
    """Mean perceptual-proxy distance between anonymized images and their sources (lower is better)."""
    _, x = _images(data, part, model)
    return float(np.mean(_percep(model, _anon(model, x, secret), x)))


def evaluate(model: PipelineModel, data: SyntheticDataset, secret, n_keys: int = 4, bitflips: int = 8,
             part: str = "test", seed: int = 0) -> dict[str, Report]:
    rng = nx.make_rng(seed + 1)
    secrets = [rng.bytes(16) for _ in range(n_keys)]
    return {
        "deid": eval_deid(model, data, secret, part),
        "recovery": eval_recovery(model, data, secret, part),
        "diversity": eval_diversity(model, data, secrets, part),
        "sensitivity": eval_key_sensitivity(model, data, secret, bitflips, part, seed),
    }


def write_reports(reports: dict[str, Report], directory: str | Path) -> None:
    for name, rep in reports.items():
        s = rep.summary
        if name == "deid":
            chart = svg.bar_chart(["anonymized", "reconstruction"], [s["mean_cos"], s["mean_rec_cos"]],
                                  "identity cosine to original")
        elif name == "recovery":
            chart = svg.bar_chart(["ssim", "id_cos", "percep"], [s["mean_ssim"], s["mean_id_cos"], s["mean_percep"]],
                                  "recovery quality")
        elif name == "diversity":
            chart = svg.bar_chart(["pair_cos", "anon_cos"], [s["mean_pair_cos"], s["mean_anon_cos"]],
                                  f"diversity ({KFFA_LABEL} {s['mean_angle_deg']:.1f} deg)")
        else:
            chart = svg.bar_chart(["min", "median", "mean", "max"],
                                  [s["gap_min"], s["gap_median"], s["mean_gap"], s["gap_max"]], "recovery cosine gap")
        rep.write(directory, chart)


# ------------------------------------------------------------------ ablation
ABLATION_COLUMNS = ("anon_cos", "rec_cos", "wrong_cos", "pair_cos", "kffa_proxy_deg", "quality_proxy", "rec_ssim")


def ablation_row(model: PipelineModel, data: SyntheticDataset, secret, secrets: Sequence, part: str = "test") -> dict:
    deid = eval_deid(model, data, secret, part).summary
    rec = eval_recovery(model, data, secret, part).summary
    raw = secret.encode("utf-8") if isinstance(secret, str) else bytes(secret)
    wrong = eval_recovery(model, data, secret, part, recover_with=flip_bit(raw, 0)).summary
    div = eval_diversity(model, data, secrets, part).summary
    return {"anon_cos": deid["mean_cos"], "rec_cos": rec["mean_id_cos"], "wrong_cos": wrong["mean_id_cos"],
            "pair_cos": div["mean_pair_cos"], "kffa_proxy_deg": div["mean_angle_deg"],
            "quality_proxy": quality_proxy(model, data, secret, part), "rec_ssim": rec["mean_ssim"]}


def eval_ablation(models: dict[str, PipelineModel], data: SyntheticDataset, secret, n_keys: int = 4,
                  part: str = "test", seed: int = 0) -> Report:
    """One row per variant (``full``, ``no_div``, ...) with the columns of ``ABLATION_COLUMNS``."""
    rng = nx.make_rng(seed + 1)
    secrets = [rng.bytes(16) for _ in range(n_keys)]
    rows = [{"variant": name, **ablation_row(m, data, secret, secrets, part)} for name, m in models.items()]
    return Report("ablation", rows, {"part": part, "keys": n_keys})


def ablation_checks(table: Report) -> dict[str, bool]:
    """The expected direction of each ablation relative to the full model."""
    by = {r["variant"]: r for r in table.rows}
    full = by["full"]
    out = {}
    if "no_div" in by:
        out["no_div"] = by["no_div"]["kffa_proxy_deg"] <= 0.7 * full["kffa_proxy_deg"]
    if "no_icl" in by:
        out["no_icl"] = by["no_icl"]["rec_cos"] < full["rec_cos"]
    if "no_img" in by:
        out["no_img"] = by["no_img"]["quality_proxy"] > full["quality_proxy"]
    if "no_dpt" in by:
        out["no_dpt"] = (by["no_dpt"]["rec_cos"] < full["rec_cos"]
                         and by["no_dpt"]["quality_proxy"] > full["quality_proxy"])
    return out
