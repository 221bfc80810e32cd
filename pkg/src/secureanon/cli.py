"""Command-line entry point: ``secureanon <command> ...``.

Exit codes: 0 success, 1 usage/config, 2 I/O or format, 3 numeric failure.
Log records go to stderr as one JSON object per line. Secrets are never logged.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import checkpoint as ck
from . import evalmetrics as ev
from . import numerics as nx
from . import synthdata as sd
from . import training as T
from .config import ABLATIONS, Config, ConfigError
from .keygen import SECRET_ENV
from .pipeline import anonymize, blend, deanonymize

EXIT_OK, EXIT_USAGE, EXIT_IO, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def log(record: dict) -> None:
    sys.stderr.write(json.dumps(record, sort_keys=True) + "\n")
    sys.stderr.flush()


def _config(path: str | None) -> Config:
    return Config.load(path) if path else Config()


def _secret(args) -> bytes:
    s = args.secret if args.secret is not None else os.environ.get(SECRET_ENV)
    if not s:
        raise UsageError(f"no secret: pass --secret or set {SECRET_ENV}")
    return s.encode("utf-8")


def _write_images(path: str, images: np.ndarray) -> None:
    with open(path, "wb") as f:
        np.save(f, images.astype(np.float32), allow_pickle=False)


def _read_images(path: str) -> np.ndarray:
    """An ``.npy`` image stack, or the images of a dataset file."""
    raw = Path(path).read_bytes()
    if raw[:4] == sd.MAGIC:
        return sd.load_dataset(path).images
    try:
        with open(path, "rb") as f:
            return np.load(f, allow_pickle=False)
    except ValueError as e:
        raise sd.DatasetFormatError(f"{path}: not a dataset or .npy image stack ({e})") from None


# ------------------------------------------------------------------ commands
def cmd_gen_data(args) -> int:
    cfg = _config(args.config)
    ds = sd.gen_dataset(args.ids, args.per_id, cfg.dims.d_id, cfg.dims.d_attr, args.seed,
                        height=cfg.dims.height, width=cfg.dims.width, render_seed=cfg.seeds.render)
    sd.save_dataset(ds, args.out)
    log({"event": "gen-data", "out": args.out, "samples": len(ds.images)})
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = _config(args.config).with_ablation(args.ablate)
    if args.phase in (1, 2) and not args.init and not cfg.ablation.no_dpt:
        raise UsageError(f"--phase {args.phase} needs --init CKPT")
    if cfg.ablation.no_dpt and args.phase == 1:
        raise UsageError("no_dpt has no separate phase 1; train --phase 2 from the phase-0 checkpoint")
    data = sd.load_dataset(args.data)
    model = None
    if args.init:
        model = ck.load_checkpoint(args.init)
        model.cfg = cfg
    if args.phase == 0:
        model, _ = T.train_phase0(data, cfg, model, log=log)
    elif args.phase == 1:
        model, _ = T.train_phase1(data, cfg, model, log=log)
    elif cfg.ablation.no_dpt:
        if model is None:
            raise UsageError("--phase 2 needs --init CKPT")
        model, _ = T.train_joint(data, cfg, model, log=log)
    else:
        model, _ = T.train_phase2(data, cfg, model, log=log)
    ck.save_checkpoint(model, args.out)
    log({"event": "checkpoint", "out": args.out, "phase": model.phase})
    return EXIT_OK


def _transform(args, fn) -> int:
    secret = _secret(args)
    model = ck.load_checkpoint(args.ckpt)
    x = _read_images(args.data)
    out = fn(model, x, secret)
    if args.mask:
        out = blend(out, x, _read_images(args.mask))
    _write_images(args.out, out)
    log({"event": args.command, "out": args.out, "images": int(len(out)), "masked": bool(args.mask)})
    return EXIT_OK


def cmd_anonymize(args) -> int:
    return _transform(args, anonymize)


def cmd_deanonymize(args) -> int:
    return _transform(args, deanonymize)


def cmd_eval(args) -> int:
    secret = _secret(args)
    model = ck.load_checkpoint(args.ckpt)
    data = sd.load_dataset(args.data)
    reports = ev.evaluate(model, data, secret, n_keys=args.keys, bitflips=args.bitflips)
    ev.write_reports(reports, args.report)
    for name, rep in reports.items():
        log({"event": "report", "kind": name, **rep.summary})
    return EXIT_OK


def gradcheck(cfg: Config, points: int = 5, seed: int = 0, tol: float = 1e-4) -> list[dict]:
    """Central-difference checks of every trainable sub-network through its training loss."""
    from . import losses as L
    from .pipeline import PipelineModel

    cfg = Config.from_dict(cfg.to_dict())
    cfg.precision = "float64"
    model = PipelineModel.build(cfg)
    rng = nx.make_rng(seed)
    d = cfg.dims
    x = rng.uniform(0.05, 0.95, (2, d.height, d.width))
    keys = model.keys([b"gc-a", b"gc-b"])
    wrong = model.keys([b"gc-c", b"gc-d"])
    last = model.nets["icl"].weights[-1]  # zero at init; perturb so inner ICL weights get gradient
    last.data = rng.standard_normal(last.shape) * 0.05

    def p1():
        return L.loss_p1(model, x)[0]

    def p2():
        return L.loss_p2(model, L.phase2_forward(model, x, keys, wrong))[0]

    def e0():
        return nx.tmean(1.0 - nx.cosine_rows(model.e_id(x), np.ones((2, d.d_z))))

    checks = [("e_id", 0, e0), ("e_attr", 1, p1), ("mapping", 1, p1), ("icl", 2, p2), ("sif", 2, p2)]
    results = []
    for comp, phase, fn in checks:
        model.set_phase(phase)
        params = [t for c, _, t in model.named_params() if c == comp]
        for t in params:
            t.requires_grad = True
        loss = fn()
        grads = nx.grad(loss, params)
        for j in range(points):
            pi = int(rng.integers(len(params)))
            p = params[pi]
            i = tuple(int(rng.integers(s)) for s in p.data.shape)
            num = nx.finite_difference_grad(lambda: fn().item(), p.data, 1e-5, [i])[i]
            err = nx.relative_error(np.array([grads[pi][i]]), np.array([num]))
            results.append({"component": comp, "point": j, "analytic": float(grads[pi][i]),
                            "numeric": float(num), "rel_err": err, "ok": err < tol})
    return results


def cmd_gradcheck(args) -> int:
    results = gradcheck(_config(args.config), points=args.points)
    for r in results:
        log({"event": "gradcheck", **r})
    return EXIT_OK if all(r["ok"] for r in results) else EXIT_NUMERIC


# --------------------------------------------------------------------- parser
def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="secureanon", description="Key-conditioned reversible identity anonymization on synthetic data.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("gen-data", help="generate and save a synthetic dataset")
    g.add_argument("--out", required=True)
    g.add_argument("--ids", type=int, default=200)
    g.add_argument("--per-id", type=int, default=10)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--config")
    g.set_defaults(fn=cmd_gen_data)

    t = sub.add_parser("train", help="run one training phase")
    t.add_argument("--phase", type=int, choices=(0, 1, 2), required=True)
    t.add_argument("--config")
    t.add_argument("--data", required=True)
    t.add_argument("--init")
    t.add_argument("--out", required=True)
    t.add_argument("--ablate", choices=ABLATIONS)
    t.set_defaults(fn=cmd_train)

    for name, fn in (("anonymize", cmd_anonymize), ("deanonymize", cmd_deanonymize)):
        a = sub.add_parser(name, help=f"{name} an image stack or dataset with a secret")
        a.add_argument("--ckpt", required=True)
        a.add_argument("--data", required=True)
        a.add_argument("--secret", help=f"secret string; falls back to ${SECRET_ENV}")
        a.add_argument("--out", required=True)
        a.add_argument("--mask", help=".npy soft mask in [0, 1] for background blending")
        a.set_defaults(fn=fn)

    e = sub.add_parser("eval", help="write evaluation reports")
    e.add_argument("--ckpt", required=True)
    e.add_argument("--data", required=True)
    e.add_argument("--report", required=True)
    e.add_argument("--secret")
    e.add_argument("--keys", type=int, default=4)
    e.add_argument("--bitflips", type=int, default=8)
    e.set_defaults(fn=cmd_eval)

    c = sub.add_parser("gradcheck", help="finite-difference check of every trainable network")
    c.add_argument("--config")
    c.add_argument("--points", type=int, default=5)
    c.set_defaults(fn=cmd_gradcheck)
    return p


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return args.fn(args)
    except (UsageError, ConfigError, nx.ContractError) as e:
        log({"event": "error", "kind": "usage", "message": str(e)})
        return EXIT_USAGE
    except (OSError, sd.DatasetFormatError, ck.CheckpointFormatError) as e:
        log({"event": "error", "kind": "io", "message": str(e)})
        return EXIT_IO
    except (T.DivergenceError, FloatingPointError) as e:
        log({"event": "error", "kind": "numeric", "message": str(e)})
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
